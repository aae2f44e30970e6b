"""Test infrastructure: localized nameservers, attacker server, resolver adapters, campaign runner."""

from .adapters import (
    AdapterError, Capabilities, ExternalAdapter, MockAdapter, QueryOutcome, ReferenceAdapter,
    ResolverAdapter, UnitEnvironment, check_liveness, parse_adapter_spec,
)
from .campaign import (
    CampaignConfig, CampaignIncomplete, CaseOutcome, UnitFailure, iter_outcomes, run_campaign, run_case,
)
from .resolver import Quirks, ReferenceResolver, accept_upstream, cache_candidates
from .servers import (
    AttackerServer, DnsSocketServer, InProcessNetwork, LocalizedHierarchy, build_fabric, serve_response,
    udp_exchange,
)
from .zones import (
    ATTACKER_ADDRESS, DEFAULT_ZONE_TEXT, ZoneConfig, ZoneConfigError, localized_ns_answer, parse_zone_file,
)


def reference_resolver(quirks: Quirks = Quirks(), env: UnitEnvironment | None = None,
                       name: str = "reference", mode: str = "forward-only",
                       dump_format: str = "unified") -> ReferenceAdapter:
    """A ReferenceAdapter on its own fabric unless ``env`` is given."""
    from ..generator import MODE_DOMAINS
    from ..wire import DnsName

    env = env or UnitEnvironment.create(0, mode, DnsName.from_text(MODE_DOMAINS[mode]))
    adapter = ReferenceAdapter(name, env, quirks, dump_format)
    adapter.start()
    return adapter
