import sys

from smoothgnn.cli import main

sys.exit(main())
