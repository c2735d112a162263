from repmult.io.mtx import read_matrix, write_matrix
