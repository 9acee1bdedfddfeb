"""MKA / MFA blocks, stems and the SE baseline"""

