"""Outsourced decryption for RLWE homomorphic encryption.

The client blinds its secret key with the inverse of a sparse polynomial, the cloud
multiplies ciphertexts by the blinded key, and the client finishes decryption with
a handful of shift-and-scale passes instead of a full transform.
"""
__version__ = "0.1.0"
