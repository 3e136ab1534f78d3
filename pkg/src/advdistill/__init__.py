"""
advdistill: differentiable Fourier-pseudospectral PDE solvers (1D Burgers,
2D Navier-Stokes vorticity form), compact neural-operator students, PGD
attacks that backpropagate through the solver, and adversarial/active
training loops, at desk scale.
"""

from .spectral import (
    SpectralGrid,
    Field,
    Spectrum,
    make_grid,
    fft_forward,
    fft_inverse,
    spectral_derivative,
    poisson_stream,
    velocity_from_stream,
    dealias,
    spectral_upsample,
    spectral_truncate,
    enstrophy,
    energy_spectrum,
)
from .autodiff import Tape, Var, NonFiniteError, stop_gradient, fd_check
from .grf import KernelSpec, RangeSpec, spectral_density, sample_grf, normalize_range, zigzag
from .solvers import (
    SolverConfig,
    ForcingSpec,
    Trajectory,
    BlowupError,
    burgers_step,
    ns_step,
    solve,
    solve_traced,
    forcing_pattern,
    curl_forcing,
    detect_blowup,
)
from .losses import LossSpec, mse, rmse, mae, relative_l2, dtw_hard, softdtw
from .operators import (
    Fno1dArch,
    Fno2dArch,
    DeepOnetArch,
    FnoParams,
    DeepOnetParams,
    TrainConfig,
    Normalizer,
    init_params,
    fno_forward,
    fno2d_step,
    fno2d_rollout,
    deeponet_forward,
    train,
    save_checkpoint,
    load_checkpoint,
)
from .attack import (
    AttackConfig,
    AttackResult,
    Dictionary,
    pgd_linf,
    pgd_l2,
    pgd_adam,
    run_attack,
    batch_attack,
    make_attack_loss,
    make_ns_attack_loss,
    teacher_from_config,
)
from .advtrain import (
    AdvTrainConfig,
    OodPool,
    DistillProblem,
    round_by_round,
    batch_by_batch,
    random_constant_baseline,
    eval_ood,
)
from .datasets import GeneratorSpec, Dataset, build_dataset, save_dataset, load_dataset
from .diagnostics import avg_perturbation, correlate, periodicity_check, spectral_report

__version__ = "0.1.0"
