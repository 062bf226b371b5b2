from setuptools import setup

setup(name='hcflab',
      version='0.1.0',
      description='Numerical laboratory for the Hermitian curvature flow dg/dt = -S on complex tori',
      author='Light',
      author_email='sgsdxzy@gmail.com',
      packages=['hcflab'],
      package_data={'hcflab': ['checkpoint.proto']},
      scripts=['bin/hcflab'],
      python_requires='>=3.9',
      install_requires=[
          'numpy>=1.20',
          'scipy>=1.7',
          'protobuf>=3.19',
          'PyYAML>=5.4',
          'pydantic>=2',
          'pandas>=1.3',
      ],
      extras_require={'test': ['pytest']},
      )
