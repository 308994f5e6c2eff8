"""Interference-aware WiFi channel selection over a context broker.

Provider agents measure per-channel interference in a simulated 2.4 GHz
environment, recommend the channel with the lowest mean interference power
and publish their findings through a central broker that caches, validates
and pushes updates to subscribed consumers.
"""

from .broker import Broker, CacheEntry, QueryResult, RegistryEntry
from .environment import (
    EnvironmentSpec,
    TransmitterSpec,
    hidden_node_scenario,
    load_environment,
    received_power,
    scan,
)
from .model import (
    ChannelPlan,
    DomainError,
    EntityRef,
    InterferencePayload,
    PowerValue,
    ScanObservation,
    ScopeRecord,
    carrier_frequency,
    channel_for_frequency,
    dbm_to_mw,
    mw_to_dbm,
)
from .protocol import (
    BrokerReply,
    ContextMessage,
    decode_message,
    decode_payload,
    encode_message,
    encode_payload,
)
from .provider import (
    ChannelReport,
    LinkBudget,
    ProviderConfig,
    adapt_validity,
    analyze_interference,
    initial_radio_check,
    load_provider_config,
    run_provider,
    snr_effective,
    snr_ideal,
)
from .scenario import ScenarioSpec, load_scenario, plot_series, run_scenario
from .server import BrokerServer, ConsumerClient

__version__ = "0.1.0"
