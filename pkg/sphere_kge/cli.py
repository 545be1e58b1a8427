"""
CLI Entry Point for Sphere KGE

Lets the command line run straight from a source checkout.
"""

import sys
from pathlib import Path

# Add the package to the path
package_dir = Path(__file__).parent
sys.path.insert(0, str(package_dir.parent))

from sphere_kge.main import main

if __name__ == '__main__':
    main()
