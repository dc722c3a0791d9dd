# utils package
# Configuration management and validation helpers 