# config package
# PowerModel presets and the default run configuration
