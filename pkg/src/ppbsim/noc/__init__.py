from .arbiter import ArbiterState, Candidate, arbitrate, make_arbiter
from .network import Network, ni_inject, packet_flits, router_cycle, vnet_of
from .router import Router, route_xy

__all__ = ["ArbiterState", "Candidate", "Network", "Router", "arbitrate", "make_arbiter", "ni_inject", "packet_flits", "route_xy",
           "router_cycle", "vnet_of"]
