"""
Main Entry Point for the Novelty-Aware Monopoly Testbed

Run with:
    python main.py pretrain --config configs/experiment.json --seeds 0 1 2
    python main.py novelty-trial --novelty configs/novelties/price_half_1499.json
"""

import sys

from backend.app.main import main

if __name__ == "__main__":
    sys.exit(main())
