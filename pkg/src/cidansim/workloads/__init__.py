"""Application drivers: microbenchmarks, bit-sliced AES, graph matching index, Myers DNA mapping."""
from .aes import aes_encrypt, aes_ratios
from .dna import myers_batch, myers_search, dna_ratios
from .graph import GraphDataset, dataset_ratios, matching_index, partition_graph
from .microbench import MicrobenchSpec, ratio_table, run_microbench

__all__ = [
    "GraphDataset", "MicrobenchSpec", "aes_encrypt", "aes_ratios", "dataset_ratios", "dna_ratios",
    "matching_index", "myers_batch", "myers_search", "partition_graph", "ratio_table", "run_microbench",
]
