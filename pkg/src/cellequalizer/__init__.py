"""Selection-switch cell-to-cell battery equalizer: network, converter, controller and simulator."""

from .cell import CellParams, CellState, default_cell_params, ocv, step_cell, terminal_voltage
from .controller import (
    Commands,
    ControllerState,
    EqualizerConfig,
    Phase,
    Role,
    check_band,
    choose_pair,
    controller_step,
    measure_vimp,
    stop_threshold,
)
from .converter import ConverterParams, TransferResult, capacitor_voltages, converter_enabled, efficiency, transfer
from .counts import ComponentCounts, component_counts, comparison_rows, dpdt_ratio
from .network import (
    Netlist,
    NetlistError,
    Polarity,
    PortConnection,
    SwitchState,
    default_netlist,
    parse_netlist,
    resolve_connectivity,
    select_pair,
    transition_count,
    verify_network,
)
from .sim import (
    ConstantCurrent,
    ConstantVoltage,
    Rest,
    Scenario,
    StepSchedule,
    Summary,
    Telemetry,
    cv_charge_current,
    run,
    summarize,
)

__version__ = "0.1.0"
