"""Online non-blocking service rate estimation for streaming stages."""

from .ique import IQueue, TransactionSnapshot
from .monitor import (
    ConvergenceTracker,
    Monitor,
    MonitorConfig,
    QObservation,
    RateEstimate,
    RatePipeline,
    StatusEvent,
    check_convergence,
    reset_after_convergence,
    run_monitor,
)
from .qmodel import (
    ObservationScenario,
    items_needed,
    pr_nonblocking_read,
    pr_nonblocking_write,
)
from .streamstat import (
    FilterKernel,
    OnlineMoments,
    SampleWindow,
    convolve_valid,
    gaussian_kernel,
    log_kernel,
    quantile95,
    update_moments,
)
from .timebase import (
    BlockageProbe,
    CalibrationError,
    Clock,
    PeriodCalibration,
    ScriptedProbe,
    SleepProbe,
    SystemClock,
    TimeRef,
    VirtualClock,
    calibrate_period,
    measure_resolution,
)
from .workload import (
    BenchReport,
    GroundTruth,
    Phase,
    PhaseClassification,
    PhaseSchedule,
    ServiceSpec,
    classify_dual_phase,
    ground_truth_rate,
    run_benchmark,
)

__version__ = "0.1.0"
