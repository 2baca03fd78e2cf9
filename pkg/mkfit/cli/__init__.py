# Command-line sub-commands
