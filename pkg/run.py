'''
This is the entry point of the solver command line.

It parses the command line and runs the selected command.
'''
from ifdm.cli.main import main

if __name__ == "__main__":
    raise SystemExit(main())
