import sys

from ipcs.cli import main

sys.exit(main())
