'''
Configuration file example for blocktrial.
Settings are read from an optional 'config.py' in the project root, anything
left out keeps its built-in default. Environment variables BLOCKTRIAL_DEBUG,
BLOCKTRIAL_WORKERS and BLOCKTRIAL_RESULTS_DIR (or a .env file) override both.
'''

config = {
    'debug': False, #Controls debugging mode (verbose logging)
    'workers': None, #Worker processes for simulations, None uses the physical core count
    'pinv_rtol': None, #Relative singular value cutoff of the generalized inverse, None uses 1e-10
    'conditioning_tol': 1e-6, #Largest residual of observed totals outside the column space of Var(n_A)
    'variance_clamp_tol': 1e-8, #Negative conditional variances down to -tol * Var(S_A) are clamped to zero
    'enumeration_cap': 10**7, #Largest sample space the exact oracle will enumerate
    'calibration_sample': 200000, #Pilot sample size of the censoring horizon calibration
    'calibration_max_iter': 200, #Bisection steps of the censoring horizon calibration
    'calibration_tol': 0.005, #Allowed gap between achieved and target censoring fraction
    'results_dir': 'results', #Where simulate writes its CSV, JSON and manifest files
}
