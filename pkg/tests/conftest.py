import pathlib
import sys

# make tests/oracles.py importable regardless of invocation directory
sys.path.insert(0, str(pathlib.Path(__file__).parent))
