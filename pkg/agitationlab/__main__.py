import sys

from agitationlab.cli import main

sys.exit(main())
