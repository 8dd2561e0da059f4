import sys

from zoguide.cli import main

sys.exit(main())
