"""Assembles loop inputs for the three test settings.

* ``air``: body clamped, no ground (single-leg bench, legs in free air).
* ``rig_ground``: body clamped, a surface at the neutral leg-tip height.
* ``ground``: free body standing on the ground.
"""

from dataclasses import replace

import numpy as np

from ..plant import N_LEGS, settle_robot
from .simulate import LoopInputs, run_loop

SETTINGS = ("air", "rig_ground", "ground")
FAR_BELOW = -1e6  # mm


class Rig:
    def __init__(self, config):
        self.config = config
        self.dt = config.harness.dt
        self.substeps = config.harness.substeps
        self._sensor_true = np.array([
            replace(config.sensor.nominal, alpha=a, dt=self.dt).packed()
            for a in config.sensor.alpha_true
        ])
        self._stand = None

    def sensor_params(self, alphas):
        return np.array([
            replace(self.config.sensor.nominal, alpha=float(a), dt=self.dt).packed() for a in alphas
        ])

    def initial_state(self, setting):
        p = self.config.plant
        if setting == "ground":
            if self._stand is None:
                self._stand = settle_robot(p.surface, p.transmission, p.kinematics, p.robot)
            s = self._stand
            return s.body_array(), np.array(s.legs), p.surface.height, False
        if setting not in SETTINGS:
            raise ValueError(f"unknown setting {setting!r}")
        body = np.zeros(6)
        body[1] = p.surface.height + p.robot.leg_length
        height = p.surface.height if setting == "rig_ground" else FAR_BELOW
        return body, np.zeros((N_LEGS, 4)), height, True

    def noise(self, n_ticks, seed):
        rng = np.random.default_rng(seed)
        meas = rng.standard_normal((n_ticks, 2 * N_LEGS, 2))
        tau = rng.normal(0.0, self.config.plant.process_noise_std, (n_ticks, N_LEGS, 2))
        return meas, tau

    def run(self, n_ticks, seed, setting, ref, drive, L=None, filt=None, alphas=None,
            offsets=None):
        """Run the compiled loop.

        ``ref`` is (4, P, 4) and ``drive`` (4, P, 2), both already rotated
        to each leg's phase; ``filt`` is a dict of stacked per-leg filter
        matrices (see :func:`piezoleg.harness.models.ModelBundle.filter_arrays`).
        """
        p = self.config.plant
        body0, legs0, height, fixed = self.initial_state(setting)
        surf = p.robot.effective_surface(replace(p.surface, height=height)).packed()
        filt = filt or _null_filter()
        alphas = self.config.sensor.alpha_true if alphas is None else alphas
        offsets = np.zeros((2 * N_LEGS, 2)) if offsets is None else np.asarray(offsets, float)
        meas, tau = self.noise(n_ticks, seed)
        u0 = filt["u0"]
        inp = LoopInputs(
            n_ticks=n_ticks, substeps=self.substeps, dt=self.dt,
            body0=body0, legs0=legs0, surface=surf,
            transmission=p.transmission.packed(), kinematics=p.kinematics.packed(),
            kinematics_model=p.kinematics_model.packed(),
            robot=p.robot.packed(), body_fixed=fixed,
            ref=ref, drive=drive,
            L=np.zeros((N_LEGS, 2, 4)) if L is None else L, u0=u0,
            v_min=p.transmission.v_min, v_max=p.transmission.v_max,
            A=filt["A"], B=filt["B"], H=filt["H"], D=filt["D"], K=filt["K"],
            x0=filt["x0"], fu0=filt["fu0"], q_clamp=1.5 * p.transmission.q_max,
            sens_true=self._sensor_true, sens_cal=self.sensor_params(alphas),
            off_true=self._true_offsets(), off_cal=offsets,
            sig_vm=self.config.sensor.noise_std_vm, sig_v=self.config.sensor.noise_std_v,
            meas_noise=meas, tau_noise=tau, output_compliance=p.output_compliance,
        )
        return run_loop(inp)

    def open_loop(self, drive, n_ticks, seed, setting="air", offsets=None, filt=None,
                  alphas=None, phase_offsets=(0.0, 0.0, 0.0, 0.0)):
        """Drive every leg with ``drive`` (P, 2) volts, shifted by its phase."""
        drive = np.asarray(drive, dtype=float)
        if drive.ndim == 2:
            drive = stack_legs(drive, phase_offsets)
        ref = np.zeros(drive.shape[:2] + (4,))
        return self.run(n_ticks, seed, setting, ref, drive, None, filt, alphas, offsets)

    def _true_offsets(self):
        s = self.config.sensor
        return np.tile([s.offset_vm, s.offset_v], (2 * N_LEGS, 1))


def stack_legs(samples, phase_offsets):
    """Per-leg copies of one-period samples rotated by the phase offsets."""
    samples = np.asarray(samples, dtype=float)
    period = samples.shape[0]
    return np.stack([
        np.roll(samples, -int(round(ph * period)), axis=0) for ph in phase_offsets
    ])


def _null_filter():
    return {
        "A": np.zeros((N_LEGS, 6, 6)), "B": np.zeros((N_LEGS, 6, 4)),
        "H": np.zeros((N_LEGS, 4, 6)), "D": np.zeros((N_LEGS, 4, 4)),
        "K": np.zeros((N_LEGS, 6, 4)), "x0": np.zeros((N_LEGS, 6)),
        "fu0": np.zeros((N_LEGS, 4)), "u0": np.zeros((N_LEGS, 2)),
    }
