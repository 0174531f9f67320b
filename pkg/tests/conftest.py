import sys
from pathlib import Path

# test-local helpers (fd_oracle, etc.)
sys.path.insert(0, str(Path(__file__).parent))
