import sys

from alqst.cli import main

sys.exit(main())
