import sys

from cineplan.cli import main

sys.exit(main())
