"""Shipped defaults and file-format constants for PanoTrack."""

DOMAIN = "panotrack"
LOG_ENV_VAR = "PANOTRACK_LOG"
DEFAULT_LOG_LEVEL = "WARNING"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# Tracking constraints (published parameter set)
DEFAULT_L_C = 4  # frames
DEFAULT_DELTA_MIN = 0.05  # meters
DEFAULT_EPS_PHI = 0.5  # meters per frame
DEFAULT_EPS_H = 0.3  # meters per frame
DEFAULT_OMEGA_S_COEFF = 0.3
DEFAULT_THETA_S = 0.3  # meters
DEFAULT_EPS_3D = 2.5  # meters
DEFAULT_EPS_Z = 0.2  # meters off the ground plane
DEFAULT_V_MAX = 0.8  # m/s
DEFAULT_DELTA_A = 9  # frames
DEFAULT_K_H = 10
DEFAULT_I_BLS_MAX = 1000
DEFAULT_FPS = 6.0

# Cost weights
DEFAULT_C_MISS = 1.0
DEFAULT_C_BIRTH = 1.5
DEFAULT_C_COLL = 2.0
DEFAULT_MAX_STALE_KICKS = 8

MISS = -1

# Scenario shape (ten walkers, about a minute at 6 fps)
DEFAULT_N_TARGETS = 10
DEFAULT_N_FRAMES = 333
DEFAULT_N_CAMERAS = 4
DEFAULT_ARENA = (8.0, 6.0)  # meters
DEFAULT_V_MAX_SIM = 0.5  # m/s
DEFAULT_NOISE_PX = 1.0
DEFAULT_P_MISS = 0.05
DEFAULT_CLUTTER_RATE = 0.1
DENSITY_PRESETS = {"low": 10, "medium": 25, "high": 40}

TARGET_HEIGHT = 1.7  # meters
TARGET_HEIGHT_JITTER = 0.05
MIN_SPEED_RATIO = 2.0 / 3.0
MIN_WAYPOINT_DISTANCE = 1.0  # meters
MIN_WALKER_SEPARATION = 0.5  # meters
WAYPOINT_RETRIES = 16
PLACEMENT_ATTEMPTS = 1000
CAMERA_HEIGHT = 4.0  # meters
CAMERA_MARGIN = 1.0  # meters outside the arena
IMAGE_WIDTH = 640
IMAGE_HEIGHT = 480
FOV_FILL = 0.9
CLUTTER_SIZE_RANGE = (10.0, 120.0)  # pixels

# Evaluation
DEFAULT_MATCH_THRESHOLD = 1.0  # meters

# Sweep grid
DEFAULT_SWEEP_K_H = (1, 5, 10, 15, 20, 25, 30)
DEFAULT_SWEEP_I_BLS_MAX = (500, 1000, 2000)
DEFAULT_SWEEP_SEEDS = 5
DEFAULT_SWEEP_FRAMES = 100

# SLAM demo
DEFAULT_SLAM_STEPS = 50
DEFAULT_SLAM_LANDMARKS = 5
DEFAULT_SLAM_RADIUS = 5.0  # meters
DEFAULT_SLAM_SIGMA_XY = 0.02  # meters per step
DEFAULT_SLAM_SIGMA_PHI = 0.05  # radians per step
DEFAULT_SLAM_SIGMA_MEAS = 0.01  # meters
DEFAULT_SLAM_N_ITER = 2
DEFAULT_SLAM_RUNS = 200
NOISE_FLOOR = 1e-12

# File formats
DETECTION_HEADER = ("frame", "camera", "u", "v", "size", "score")
TRACK_HEADER = ("frame", "id", "x", "y", "z")
CAMERA_KEYS = ("id", "fx", "fy", "cx", "cy", "rotation", "translation")
FLOAT_FORMAT = "%.9f"

DETECTIONS_FILE = "detections.csv"
CAMERAS_FILE = "cameras.json"
TRUTH_FILE = "truth.csv"
TRACKS_FILE = "tracks.csv"
TIMING_FILE = "timing.json"
REPORT_FILE = "report.json"
SWEEP_FILE = "sweep.csv"
SWEEP_SUMMARY_FILE = "sweep_summary.csv"
SWEEP_TREND_FILE = "sweep_trend.csv"
SLAM_POSES_FILE = "slam_poses.csv"
SLAM_LANDMARKS_FILE = "slam_landmarks.csv"
SLAM_NEES_FILE = "slam_nees.csv"
SLAM_SUMMARY_FILE = "slam_summary.json"
