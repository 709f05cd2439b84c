"""Behavior-tree composed Stack-of-Tasks control.

Subpackages and modules:

cascade     hierarchical QP cascade (lexicographic least squares)
kinematics  serial-chain models, forward kinematics, geometric Jacobians
tasks       task vocabulary: error functions, Jacobians, constraint rows
runtime     live task stack and the high-frequency control step
bt          behavior-tree interpreter with task-setting leaves
scenario    deterministic co-simulation harness and trace export
"""

__version__ = "0.1.0"
