import sys

from mkfit.main import main

sys.exit(main())
