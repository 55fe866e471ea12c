def build(current_date, current_time, question):
    prompt = "Noting the current date {current_date} or time of {current_time} help the human with the following request, Request: "+ question
    return prompt.format(current_date=current_date, current_time=current_time)
