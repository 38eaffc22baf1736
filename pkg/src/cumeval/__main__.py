import sys

from cumeval.cli import main

sys.exit(main())
