import sys

from sam2_bridge.server import main

if __name__ == "__main__":
    sys.exit(main())
