MAJOR_VERSION = "0.3"
FULL_VERSION = "0.3.0"
