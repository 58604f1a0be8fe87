import sys

from saklqr.harness.cli import main

sys.exit(main())
