import sys

from boundmap.cli import main

sys.exit(main())
