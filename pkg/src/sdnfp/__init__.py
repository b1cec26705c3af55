"""sdnfp: a desk-scale lab for timing-based fingerprinting of OpenFlow
controller-switch interactions, and the group-table delay countermeasure."""

from .defense import (
    DelayElementConfig,
    FlowActivity,
    TABLE4_DELTA_RTT,
    TABLE4_DISPERSION,
    apply_delay_element,
    delay_for,
    select_bucket,
)
from .distributions import CrossTrafficModel, DelayModel
from .features import (
    DELTA_RTT,
    DISPERSION,
    FeatureSample,
    ScenarioContext,
    delta_rtt_from_trace,
    dispersion_from_trace,
    label_samples,
)
from .netsim import (
    ControllerSpec,
    DriftModel,
    FlowKey,
    FlowTable,
    LinkSpec,
    Packet,
    PathSpec,
    Simulation,
    SwitchSpec,
    clear_flow_tables,
    forward_packet,
    handle_table_miss,
    simulate_exchange,
    simulate_pair,
    transmission_delay_ns,
    uniform_path,
)
from .probes import (
    PassivePair,
    ProbeTrain,
    TraceRecord,
    build_probe_train,
    extract_passive_pairs,
    run_train,
)
from .scenario import (
    ConfigError,
    ResultBundle,
    Scenario,
    builtin_scenarios,
    drift_variant,
    emit_report,
    load_scenarios,
    run_scenario,
)
from .stats import (
    EERResult,
    GPDParams,
    Histogram,
    build_histogram,
    classify,
    compute_eer,
    fit_gpd,
    gpd_pdf,
    gpd_quantile,
    gpd_sample,
    welch_t_test,
)

__version__ = "0.1.0"
