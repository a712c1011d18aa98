"""Constants for the CPG continual-learning engine."""

# Layer kinds
LAYER_DENSE = "dense"
LAYER_RELU = "relu"
LAYER_HEAD = "softmax-cross-entropy-head"

# Accuracy goal modes
GOAL_EXPLICIT = "explicit"
GOAL_AVG = "avg"
GOAL_MAX = "max"
GOAL_TOP = "top"
GOAL_MODES = (GOAL_EXPLICIT, GOAL_AVG, GOAL_MAX, GOAL_TOP)

# Task sources
SOURCE_SYNTHETIC = "synthetic"
SOURCE_IDX = "idx"
SOURCE_CSV = "csv"

# Baseline sources
BASELINE_SCRATCH = "scratch"
BASELINE_FINETUNE = "finetune"

# Configuration keys
CONF_SEED = "seed"
CONF_TASK_SOURCE = "task_source"
CONF_N_TASKS = "n_tasks"
CONF_CLASSES_PER_TASK = "classes_per_task"
CONF_DIM = "dim"
CONF_PER_CLASS = "per_class"
CONF_SEP = "sep"
CONF_TRAIN_IMAGES = "train_images"
CONF_TRAIN_LABELS = "train_labels"
CONF_TEST_IMAGES = "test_images"
CONF_TEST_LABELS = "test_labels"
CONF_TRAIN_CSV = "train_csv"
CONF_TEST_CSV = "test_csv"
CONF_ORDER_SEED = "order_seed"
CONF_HIDDEN = "hidden"
CONF_GOAL_MODE = "goal_mode"
CONF_GOAL = "goal"
CONF_GOAL_OFFSET = "goal_offset"
CONF_TOP_DELTA = "top_delta"
CONF_BASELINE = "baseline"
CONF_BASELINE_TRIALS = "baseline_trials"
CONF_STEP_FRACTION = "step_fraction"
CONF_RETRAIN_EPOCHS = "retrain_epochs"
CONF_MIN_REMAINING = "min_remaining"
CONF_INCREMENT_FRACTION = "increment_fraction"
CONF_MAX_EXPANSION = "max_expansion"
CONF_MAX_RETRIES = "max_retries"
CONF_RESET_ON_GROW = "reset_on_grow"
CONF_REUSE_SHADOW = "reuse_shadow"
CONF_PICK_ALL = "pick_all"
CONF_LR = "lr"
CONF_MOMENTUM = "momentum"
CONF_MASK_LR = "mask_lr"
CONF_THRESHOLD = "threshold"
CONF_SHADOW_INIT = "shadow_init"
CONF_BATCH_SIZE = "batch_size"
CONF_EPOCHS = "epochs"
CONF_MAX_EPOCHS = "max_epochs"
CONF_PICK_EPOCHS = "pick_epochs"
CONF_GROWTH_NOISE = "growth_noise"
CONF_CHECKPOINT = "checkpoint"
CONF_REPORT = "report"

# Environment override for the run seed
ENV_SEED = "CPG_SEED"

# Default values
DEFAULT_SEED = 0
DEFAULT_N_TASKS = 6
DEFAULT_CLASSES_PER_TASK = 2
DEFAULT_DIM = 16
DEFAULT_PER_CLASS = 60
DEFAULT_SEP = 6.0
DEFAULT_ORDER_SEED = 0
DEFAULT_HIDDEN = (64, 32)
DEFAULT_GOAL = 0.9
DEFAULT_GOAL_OFFSET = 0.0
DEFAULT_TOP_DELTA = 0.005
DEFAULT_BASELINE_TRIALS = 3
DEFAULT_STEP_FRACTION = 0.1
DEFAULT_RETRAIN_EPOCHS = 5
DEFAULT_MIN_REMAINING = 1  # per layer
DEFAULT_INCREMENT_FRACTION = 0.1
DEFAULT_MAX_EXPANSION = 1.5
DEFAULT_MAX_RETRIES = 3
DEFAULT_LR = 1e-2
DEFAULT_MOMENTUM = 0.9
DEFAULT_MASK_LR = 1e-4
DEFAULT_THRESHOLD = 5e-3
DEFAULT_SHADOW_INIT = 1e-2
DEFAULT_BATCH_SIZE = 32
DEFAULT_EPOCHS = 10
DEFAULT_MAX_EPOCHS = 30
DEFAULT_PICK_EPOCHS = 10
DEFAULT_GROWTH_NOISE = 1e-3

# Synthetic tasks keep this share of each class for training
SYNTHETIC_TRAIN_FRACTION = 0.8

# IDX magic numbers (big-endian header)
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

# Checkpoint format
CHECKPOINT_MAGIC = b"CPG1"
CHECKPOINT_VERSION = 1
MAX_SEED = 2**64 - 1  # stored as u64

# CLI exit codes
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG_ERROR = 2
EXIT_DATA_ERROR = 3
EXIT_GOAL_UNMET = 4
