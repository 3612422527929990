"""City model: everyday activities, houses on fire and healthcare dispatch."""
from .activities import (
    ACTIVITY_KINDS,
    ACTIVITY_WEIGHTS,
    TRANSPORT_MODES,
    Fleet,
    Individual,
    Society,
    find_share_partner,
    plan_office_trip,
    trigger_activity,
)
from .common import STRATEGIES, Agenda, CityParams, Trip, fire_params
from .fire import FireService, House, fire_dynamics_step, generate_fire_events, truck_reduction
from .healthcare import (
    HealthcareRequest,
    HealthService,
    Hospital,
    allocate_hospital_resources,
    request_roles,
    required_appliances,
    treatment_roles,
)
from .model import CityModel, build_city_world, run_city

__all__ = [
    "ACTIVITY_KINDS", "ACTIVITY_WEIGHTS", "TRANSPORT_MODES", "Fleet", "Individual", "Society",
    "find_share_partner", "plan_office_trip", "trigger_activity",
    "STRATEGIES", "Agenda", "CityParams", "Trip", "fire_params",
    "FireService", "House", "fire_dynamics_step", "generate_fire_events", "truck_reduction",
    "HealthcareRequest", "HealthService", "Hospital", "allocate_hospital_resources",
    "request_roles", "required_appliances", "treatment_roles",
    "CityModel", "build_city_world", "run_city",
]
