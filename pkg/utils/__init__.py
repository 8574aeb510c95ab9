# Utils module
from .config_loader import ConfigLoader
from .dataio import CellPartition, ColumnSchema, Dataset, load_dataset, partition_cells
from .edist import EmpiricalDistribution, QQTransform
from .errors import CicError, EstimationError, ValidationError
from .progress_tracker import ProgressTracker

__all__ = [
    'CellPartition', 'CicError', 'ColumnSchema', 'ConfigLoader', 'Dataset', 'EmpiricalDistribution',
    'EstimationError', 'ProgressTracker', 'QQTransform', 'ValidationError', 'load_dataset', 'partition_cells',
]
