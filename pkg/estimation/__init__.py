# estimation package
# Background correction, g2 fits, eta calibration, power regressions and saturation

from estimation.models import FitResult, PowerPoint, EtaCalibration, PowerModelFit, SaturationFit
from estimation.background import background_correct, estimate_brightness
from estimation.g2_fit import fit_g2, require_converged, fitted_curve
from estimation.calibration import calibrate_eta, fill_rates, invert_point
from estimation.power_fit import extract_power_model
from estimation.saturation import fit_saturation
from estimation.comparison import compare_models, confidence_ellipsoid_contains
