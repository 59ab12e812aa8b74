"""Progressive in-network ICA: FastICA refined hop by hop on growing subsets."""

__version__ = "0.1.0"
