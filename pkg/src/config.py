import os

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))

# Every command seeds from here unless --seed is given
DEFAULT_SEED = int(os.environ.get('OFFLOAD_SEED', 7))

# Divisor applied to n*ln(n) so path-planning queries land in roughly 0-5
MAP_SCALE = float(os.environ.get('OFFLOAD_MAP_SCALE', 1_000_000))
DEFAULT_GRID_RESOLUTION = 0.05

SERVER_ADDR = os.environ.get('OFFLOAD_SERVER_ADDR', '127.0.0.1:7070')
BIND_ADDR = os.environ.get('OFFLOAD_BIND_ADDR', '127.0.0.1:7070')
INJECTED_RTT = float(os.environ.get('OFFLOAD_RTT_MS', 30)) / 1000.0
CLIENT_TIMEOUT = float(os.environ.get('OFFLOAD_TIMEOUT_S', 5))

REPORTS_CACHE_DB = os.environ.get('OFFLOAD_REPORTS_DB', './data/reports.db')
LOGS_DIR = os.environ.get('OFFLOAD_LOG_DIR', os.path.join(PROJECT_ROOT, 'logs'))

# Window sizes evaluated by a default sweep
DEFAULT_WINDOWS = (5, 10, 20, 30, 40, 50, 75, 100, 500)
DEFAULT_STREAM_SIZE = 1000
TRAIN_FRACTION = 0.8

# Generated input sizes are uniform on [0, D_MAX]
D_MAX = 5.0
# No simulated execution is faster than 1 ms
TIME_FLOOR = 0.001

# Default cost profile, calibrated with r = m*sd(d) / sqrt(m^2*var(d) + noise^2)
# for d ~ U[0, 5]: mean t_local = 0.1753 s (r ~ 0.76), mean t_cloud = 0.1401 s (r ~ 0.28)
LOCAL_SLOPE = 0.012
LOCAL_INTERCEPT = 0.1453
LOCAL_NOISE_STD = 0.0148
CLOUD_SLOPE = 0.010
CLOUD_INTERCEPT = 0.11511
CLOUD_NOISE_STD = 0.0495
