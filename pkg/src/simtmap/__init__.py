"""Model of hardware-aware OpenCL work-size mapping on a SIMT GPGPU."""

from .device import DeviceConfig, MappingScenario, Workload, classify_scenario, hardware_parallelism
from .kernels import InstrClass, KernelDescriptor, KernelInstance, Section, builtin_catalog, get_kernel, instantiate
from .mapper import LaunchPlan, WarpLaunch, distribute, kernel_call_count, optimal_lws
from .sim import LatencyModel, SimResult, SimulationError, simulate
from .sweep import FIXED32, NAIVE, OPTIMAL, MappingStrategy, SweepGrid, SweepReport, run_sweep, summarize
from .trace import TraceMetrics, TraceRecord, compute_metrics, parse_trace, write_trace

__version__ = "0.1.0"
