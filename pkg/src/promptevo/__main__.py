import sys

from promptevo.cli import main

sys.exit(main())
