import os
for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")  # small-matrix GEMMs: thread sync costs more than it buys

import sys, pathlib
sys.path.insert(0, str(pathlib.Path(__file__).parent))
