"""Level-set topology optimization of 2D TM cloaks with an H-matrix BEM solver.

Time convention: fields oscillate as exp(-i*omega*t), so the outgoing
fundamental solution is (i/4) * H0^(1)(k*r) and radiated waves carry the
first-kind Hankel functions everywhere in this package.
"""

__version__ = "0.1.0"
