"""Problem builders: SVM training, portfolio allocation, resistive networks."""

from .nrn import ResistiveNetwork, build_nrn_qp, kirchhoff_solve, nrn_steady_state
from .portfolio import PortfolioSpec, build_portfolio_qp, solve_portfolio
from .svm import LabeledDataset, SvmModel, build_svm_qp, predict, train_svm
