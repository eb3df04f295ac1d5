from .module import ALPHA_AXES, CausalAnalysis, CausalOutput, window_mass

__all__ = ["ALPHA_AXES", "CausalAnalysis", "CausalOutput", "window_mass"]
