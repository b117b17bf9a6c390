"""
Tipos de error de las simulaciones.

Cada error lleva el código de salida que la CLI reporta para él, como un
handler HTTP lleva su status code.
"""


class SimulationError(Exception):
    """Clase base de las fallas que terminan una corrida"""

    exit_code = 1


class ConfigError(SimulationError):
    """Configuración de experimento inválida o ilegible"""

    exit_code = 2


class ValidityWindowError(SimulationError):
    """Se pidió una medición fuera de la ventana de validez por masa en el borde"""

    exit_code = 3


class InsufficientWindowError(ValidityWindowError):
    """Muy pocos puntos válidos para ajustar una ley de potencias"""


class NonFiniteFieldError(SimulationError):
    """Un campo tomó valores NaN o Inf"""

    exit_code = 4


class InvariantViolation(SimulationError):
    """Una propiedad de conservación o monotonía falló sobre datos medidos"""

    exit_code = 5
