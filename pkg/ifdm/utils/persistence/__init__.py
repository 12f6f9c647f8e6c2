from .field_file import FieldRecord, write_field, read_field, write_state, read_state, write_trajectory, read_trajectory
from .tables import write_csv, read_csv_rows
