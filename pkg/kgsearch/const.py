"""Constants for the knowledge graph semantic search engine."""

DOMAIN = "kgsearch"

# Files
MANIFEST_FILE = "manifest.json"
DATA_DIR = "data"
EMBEDDING_MAGIC = b"KGSE"

# TSV conventions
TSV_SEPARATOR = "\t"
TYPE_SEPARATOR = "|"
COMMENT_PREFIX = "#"

# Entities missing from the entities file get this type
PLACEHOLDER_TYPE = "Thing"

# Search configuration keys
CONF_TAU = "tau"
CONF_N_HAT = "n_hat"
CONF_K = "k"
CONF_OVERFETCH = "overfetch"
CONF_TIME_BOUND = "time_bound"
CONF_ALERT_RATIO = "alert_ratio"
CONF_ASSEMBLY_TIME = "assembly_time_per_match"
CONF_VISITED_SCOPE = "visited_scope"
CONF_PRUNE = "prune"
CONF_EAGER_SEMANTIC_GRAPH = "eager_semantic_graph"
CONF_REPORT_EVERY = "report_every"
CONF_UNGUARDED_TA = "unguarded_ta"

# Search defaults
DEFAULT_TAU = 0.8
DEFAULT_N_HAT = 4
DEFAULT_K = 10
DEFAULT_OVERFETCH = 3
DEFAULT_ALERT_RATIO = 90.0
DEFAULT_REPORT_EVERY = 16
DEFAULT_VIRTUAL_TICK = 0.001  # seconds per expansion
DEFAULT_CALIBRATION_MATCHES = 1000
DEFAULT_POLL_INTERVAL = 0.001  # coordinator queue poll, seconds
DEFAULT_DEADLINE_TOLERANCE = 0.10  # allowed overrun of a wall-clock time bound

# Visited-set disciplines
VISITED_PATH = "path"
VISITED_SEARCH = "search"
DEFAULT_VISITED_SCOPE = VISITED_SEARCH

# Training configuration keys
CONF_DIM = "dim"
CONF_MARGIN = "margin"
CONF_LEARNING_RATE = "learning_rate"
CONF_EPOCHS = "epochs"
CONF_NEGATIVES = "negatives_per_positive"
CONF_BATCH_SIZE = "batch_size"
CONF_SEED = "rng_seed"

# Training defaults
DEFAULT_DIM = 50
DEFAULT_MARGIN = 1.0
DEFAULT_LEARNING_RATE = 0.01
DEFAULT_EPOCHS = 200
DEFAULT_NEGATIVES = 1
DEFAULT_BATCH_SIZE = 128
DEFAULT_SEED = 0
NEGATIVE_SAMPLE_ATTEMPTS = 10

# Noise
NOISE_NODE = "node"
NOISE_EDGE = "edge"
DEFAULT_NOISE_NEIGHBORS = 10

# Oracles
DEFAULT_ORACLE_NODE_CAP = 200

# Run report component keys (decomposition, semantic graph, search, assembly)
REPORT_C1 = "c1_decomposition"
REPORT_C2 = "c2_semantic_graph"
REPORT_C3 = "c3_search"
REPORT_C4 = "c4_assembly"
REPORT_TOTAL = "total"

# CLI exit codes
EXIT_OK = 0
EXIT_RUNTIME_ERROR = 1
EXIT_VALIDATION_ERROR = 2
