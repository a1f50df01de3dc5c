from __future__ import annotations

from typing import Optional


class SmoothGNNError(Exception):
    pass


class DatasetLoadError(SmoothGNNError):
    # Fichier manquant ou ligne illisible ; la CLI renvoie le code 2
    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(f"{where}{message}")


class DatasetValidationError(SmoothGNNError, ValueError):
    pass


class ConfigError(SmoothGNNError, ValueError):
    pass


class ShapeError(SmoothGNNError, ValueError):
    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        dims = ", ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: formes incompatibles {dims}")


class BackwardError(SmoothGNNError, RuntimeError):
    pass


class GradientError(SmoothGNNError, FloatingPointError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"gradient non fini pour le paramètre '{name}'")


class TrainingDivergenceError(SmoothGNNError, ArithmeticError):
    pass


class CheckpointError(SmoothGNNError):
    pass


class ResultsSchemaError(SmoothGNNError, ValueError):
    pass
