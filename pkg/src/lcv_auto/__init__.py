"""
Simulation stack of an automated light commercial vehicle:
- exceptions.py: the error hierarchy
- parameters.py: vehicle and actuator constants, engine map, parameter files
- dynamics.py: single-track plant with Dugoff tires and the RK4 integrator
- actuation.py: throttle, brake and steering by wire
- guidance.py: CC / ACC / CACC and the waypoint follower with obstacle correction
- sensing.py: GPS, compass, heading fusion, radar and lidar models
- comms.py: V2V codec, UDP to CAN bridge and the impaired channel
- projection.py: frames, footprints and the local tangent plane
- scenario.py: scenario files, profiles, steering patterns, DLC corridor, waypoints
- engine.py: the multi-rate co-simulation, using all of the above
- metrics.py, outputs.py, cli.py: evaluation, artefacts and the command line
"""

__version__ = "1.0.0"

import src.lcv_auto.exceptions
import src.lcv_auto.parameters
import src.lcv_auto.dynamics
import src.lcv_auto.actuation
import src.lcv_auto.guidance
import src.lcv_auto.sensing
import src.lcv_auto.comms
import src.lcv_auto.projection
import src.lcv_auto.scenario
import src.lcv_auto.metrics
import src.lcv_auto.outputs
import src.lcv_auto.engine

__all__ = ["exceptions", "parameters", "dynamics", "actuation", "guidance", "sensing", "comms", "projection",
           "scenario", "metrics", "outputs", "engine", "cli"]
