from .suites import FAULTS, SUITES, Fault, format_table, run_suites
