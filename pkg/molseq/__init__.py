"""
molseq: SMILES/SELFIES sequence models (classical and quantum-kernel LSTM)
for molecular property prediction on SIDER-style datasets.
"""

__version__ = "0.1.0"
