from .boxqp import BoxQPResult, solve_box_qp
from .leader import (HorizonProblem, HorizonSolution, NmpcLeader, NmpcWeights, PredictionModel,
                     leader_dynamics, solve_horizon, stage_cost, terminal_cost, tracking_error)

__all__ = [
    "BoxQPResult", "HorizonProblem", "HorizonSolution", "NmpcLeader", "NmpcWeights",
    "PredictionModel", "leader_dynamics", "solve_box_qp", "solve_horizon", "stage_cost",
    "terminal_cost", "tracking_error",
]
