import sys

from dropmat.cli import main

sys.exit(main())
