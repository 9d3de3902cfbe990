import sys

from hardedge.main import main

sys.exit(main())
