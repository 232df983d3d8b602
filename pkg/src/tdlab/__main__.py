import sys

from tdlab.cli import main

sys.exit(main())
