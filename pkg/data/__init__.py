# data package
# Event stream and result file formats
