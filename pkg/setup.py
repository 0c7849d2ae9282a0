from setuptools import setup

setup(name='ringnls',
      version='0.9.2',
      description='Collapsing-ring blow-up laboratory for the radial focusing nonlinear Schroedinger equation.',
      url='',
      author='',
      author_email='',
      license='BSD-3',
      packages=['ringnls'],
      install_requires=['numpy>=1.22',
                        'scipy>=1.9',
                        'pandas>=2.0',
                        'xlsxwriter>=3.0.3',
                        'pyyaml>=6.0',
                        'matplotlib>=3.5'],
      scripts=['bin/ringnls',
               'scripts/plotDiagnostics.py',
               'scripts/sweepParameters.py'],
      zip_safe=False)
