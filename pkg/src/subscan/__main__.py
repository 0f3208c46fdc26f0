import sys

from subscan.cli import main

sys.exit(main())
