import sys

from dynbot.cli import main

sys.exit(main())
