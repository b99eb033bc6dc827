"""ecsp - emotion-cause span-pair extraction and classification

"""
