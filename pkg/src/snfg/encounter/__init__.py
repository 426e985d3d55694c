"""Two-aircraft mid-air encounter model."""
from .state import (AircraftState, FilterTimeConstants, PilotObservation, TcasIntent, TcasObservation,
                    UtilityWeights, WorldState, kinematics_step, min_approach_distance, pilot_observe,
                    pilot_utility, tcas_observe)
from .tcas import RA_VALUES, TcasParams, mini_tcas
from .game import EncounterGame, GameParams, PilotDecisionError, PilotModel, build_encounter_net, pilot_decide
from .rollout import rollout_dmin
