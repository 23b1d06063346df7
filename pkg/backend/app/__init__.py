"""
Novelty-Aware Monopoly Testbed

Game engine, knowledge-graph and rule-graph learners, novelty detection,
graph-attention actor-critic agents and the experiment harness, driven from the
command line in main.py.
"""
