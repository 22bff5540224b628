"""Age-of-information scheduling over error-prone channels.

Exact planning, Whittle-index policies, lower bounds and learning agents for
a source updating M users under an average transmission budget.
"""

__version__ = "0.1.0"
