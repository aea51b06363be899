"""Shared builders for randomized integer pipelines.

A pipeline is a flat [opcode, operand, opcode, operand, ...] list — the form
the registered kleisli functions take as a single capture — and can be turned
into shipped stages or run directly against the in-process oracle.
"""

from remotable import InlineValue, Stage
from remotable.funcs import OP_ADD, OP_INC, OP_MUL, run_int_pipeline

__all__ = ["OP_ADD", "OP_INC", "OP_MUL", "run_int_pipeline", "stages_for_ops", "random_ops"]


def stages_for_ops(ops):
    stages = []
    for i in range(0, len(ops), 2):
        opcode, operand = ops[i], ops[i + 1]
        if opcode == OP_INC:
            stages.append(Stage("inc"))
        elif opcode == OP_MUL:
            stages.append(Stage("mul", (InlineValue(operand),)))
        elif opcode == OP_ADD:
            stages.append(Stage("add", (InlineValue(operand),)))
        else:
            raise ValueError(f"unknown opcode {opcode}")
    return stages


def random_ops(rng, min_len=0, max_len=5):
    ops = []
    for _ in range(rng.randint(min_len, max_len)):
        opcode = rng.choice((OP_INC, OP_MUL, OP_ADD))
        ops.extend([opcode, rng.randint(-9, 9)])
    return ops
