"""Constants for the optimizer comparison experiments."""

import math

MAX_QUBITS = 14
NORM_ATOL = 1e-10

EXPERIMENTS = ("ground_state", "binary", "mnist", "bell_noise")
METHODS = ("GRAD", "LL", "LLES")

DEFAULT_T = 2
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
DEFAULT_LR = 0.1
DEFAULT_SIGMA = math.pi / 24
DEFAULT_EPOCHS = {"ground_state": 200, "binary": 50, "mnist": 50, "bell_noise": 0}
DEFAULT_GROUND_QUBITS = 4
DEFAULT_GROUND_LAYERS = 4
DEFAULT_BINARY_QUBITS = 4
DEFAULT_N_TRAIN = 100
DEFAULT_N_TEST = 40
MAX_HIDDEN_SIZE = 64

BINARY_LAYERS = 8
BINARY_FEATURES = 2

MNIST_QUBITS = 10
MNIST_LAYERS = 15
MNIST_INPUT_DIM = 784
MNIST_READOUT_QUBITS = (7, 8, 9)
MNIST_CLASSES = (0, 1, 2)
MNIST_BATCH_SIZE = 32
MNIST_PER_CLASS_TRAIN = 1000
MNIST_PER_CLASS_TEST = 100
MNIST_META_WEIGHTS = (1.0 / 11.0, 10.0 / 11.0)
MNIST_TRAIN_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
MNIST_TEST_FILES = ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

CSV_COLUMNS = (
    "experiment",
    "method",
    "n_qubits",
    "L",
    "T",
    "lr",
    "sigma",
    "noise_lambda",
    "seed",
    "epoch",
    "cost",
    "accuracy",
    "circuit_executions",
)
BELL_COLUMNS = ("experiment", "noise_lambda", "shots", "p00", "p01", "p10", "p11")
FAILURE_EPOCH = -1

OUTPUT_DIR_ENV = "VQAOPT_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "results"
SUMMARY_FILENAME = "summary.json"
