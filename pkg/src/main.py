"""
Entry point for application.

Run a subcommand, for example:
    python main.py simulate --workload dns --rho 0.1 --policy 0.42/C6S3
    python main.py compare --strategies SS,DVFS,R2H:C6 --format csv
"""
import sys

from sleepscale.cli import main

if __name__ == '__main__':
    sys.exit(main())
