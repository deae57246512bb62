"""Joint Bayesian inference of hidden infection times, parents and link
strengths of a diffusion process from per-node time series."""

__version__ = "0.1.0"

from .evaluate import (ScenarioSpec, deviation_alpha, deviation_t, deviation_z,
                       independent_changepoint, run_scenarios, scenario)
from .ingest import (cluster_regions, build_series, detect_sources, exclude_silent_regions,
                     fit_gamma_hyperparams, load_events, prepare_inputs)
from .likelihood import (GaussianModel, PoissonProfile, joint_log_posterior, log_gamma_prior,
                         log_obs_lik, log_parent_prior, log_waiting_prior)
from .model import LatentState, Network, ObservationMatrix, validate_network
from .sampler import (GibbsConfig, SampleChain, PosteriorSummary, gibbs_sweep, run_chain,
                      run_chains, sample_infection_time, sample_link_strength, sample_parent,
                      summarize)
from .synth import SynthConfig, generate_dataset
