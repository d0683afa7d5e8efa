from .dataset import load_dataset_csv
from .runner import ClientRunner, ClientSession, join_flow

__all__ = ["ClientRunner", "ClientSession", "join_flow", "load_dataset_csv"]
