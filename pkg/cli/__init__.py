# cli package
# Command-line front end, run configuration and the closed-loop pipeline
