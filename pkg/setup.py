from setuptools import setup, find_packages

setup(
    name='landingflow',
    version='0.1.0',
    author='Landingflow',
    author_email='test@test.com',
    description='Retraction-free landing flows on the Stiefel manifold, with generalized Stiefel geometry and convergence certificates',
    long_description=open('README.md').read(),
    long_description_content_type='text/markdown',
    packages=find_packages(exclude=["tests", "tests.*"]),
    include_package_data=True,
    install_requires=open('requirements.txt').read().splitlines(),
    entry_points={
        'console_scripts': [
            'landingflow=landingflow.cli:main',
        ],
    },
    classifiers=[
        'Programming Language :: Python :: 3',
        'License :: OSI Approved :: MIT License',
        'Operating System :: OS Independent',
    ],
    python_requires='>=3.9',
)
