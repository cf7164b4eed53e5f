"""motiongan: few-step denoising-diffusion-GAN for skeletal motion synthesis.

A self-contained research codebase on numpy: a float64 autodiff core, a
small-T diffusion schedule, a procedural motion dataset with forward
kinematics, a conditional transformer generator paired with an MLP
discriminator, adversarial + geometric training, few-step guided sampling,
and an evaluation suite.
"""

__version__ = "0.1.0"
