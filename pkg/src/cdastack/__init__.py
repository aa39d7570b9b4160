"""Desk-scale cooperative driving automation stack.

Bit-exact V2X message codec, topic-based pub/sub transport, seeded link
impairment, simulated vehicle agents, an operator advisory service, and a
guarded gateway that turns model-generated text into validated vehicle
commands.
"""

__version__ = "0.1.0"
